"""Command-line entry point.

Exit codes: 0 on success, 1 on validation or data failure, 2 on usage errors
(argparse's default). Every stochastic subcommand takes --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus, fdpo, metrics, reward, selector, server
from .corpus import CorpusError
from .scorer import Scorer
from .segmenter import condense


def _write_out(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _load_config(path: str | None) -> dict:
    """Optional JSON or key=value config file for the training commands."""
    if not path:
        return {}
    raw = Path(path).read_text(encoding="utf-8")
    stripped = raw.lstrip()
    if stripped.startswith("{"):
        data = json.loads(raw)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        return data
    out: dict = {}
    for line_no, line in enumerate(raw.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected key=value")
        key, value = line.split("=", 1)
        try:
            out[key.strip()] = json.loads(value.strip())
        except json.JSONDecodeError:
            out[key.strip()] = value.strip()
    return out


def _setting(args, config: dict, name: str, default):
    """Flag beats config file beats default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if name in config:
        return config[name]
    return default


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_validate(args) -> int:
    corpus.ingest(args.corpus)
    return 0


def cmd_stats(args) -> int:
    records = corpus.ingest(args.corpus)
    st = corpus.stats(records)
    lines = []
    for split in sorted(st.split_counts):
        lines.append(f"split,{split},{st.split_counts[split]}")
    for label in corpus.Label:
        lines.append(f"spans,{label.value},{st.span_counts[label]}")
        lines.append(f"chars,{label.value},{st.char_counts[label]}")
    lines.append(f"chars,implicit_accurate,{st.implicit_accurate_chars}")
    lines.append(f"chars,total,{st.total_chars}")
    for bucket, count in enumerate(st.density_histogram):
        lines.append(f"density_bucket,{bucket},{count}")
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def cmd_condense(args) -> int:
    records = corpus.ingest(args.corpus)
    lines = []
    for record in records:
        obj = corpus.record_to_obj(record)
        obj["sentence_labels"] = [
            {"start": seg.start, "end": seg.end, "label": seg.label.value}
            for seg in condense(record)
        ]
        lines.append(corpus.dumps_canonical(obj))
    _write_out("\n".join(lines) + "\n" if lines else "", args.out)
    return 0


def cmd_train_rm(args) -> int:
    config = _load_config(args.config)
    model = reward.RewardModel(
        density=args.density,
        granularity=args.granularity,
        epochs=int(_setting(args, config, "epochs", 100)),
        learning_rate=float(_setting(args, config, "learning_rate", 0.5)),
        embed_dim=int(_setting(args, config, "embed_dim", 32)),
        vocab_size=int(_setting(args, config, "vocab_size", 4096)),
        seed=int(_setting(args, config, "seed", 0)),
    )
    records = corpus.ingest(args.corpus)
    model.fit(records)
    model.scorer_.save(args.model_out)
    print(
        f"trained {args.granularity} {args.density}-density reward model on "
        f"{len(records)} records; loss {model.loss_trace_[0]:.6f} -> {model.loss_trace_[-1]:.6f}"
    )
    return 0


def cmd_eval_rm(args) -> int:
    model = Scorer.load(args.model)
    records = corpus.ingest(args.corpus)
    cfg = reward.RmConfig(density=args.density, granularity=reward.granularity_for(model))
    result = reward.eval_rm(model, records, cfg)
    print(f"accuracy={result.accuracy:.4f}")
    print(f"macro_f1={result.macro_f1:.4f}")
    print("confusion:")
    for row in result.confusion:
        print("  " + " ".join(str(int(v)) for v in row))
    return 0


def cmd_train_fdpo(args) -> int:
    config = _load_config(args.config)
    trainer = fdpo.FdpoTrainer(
        mode=args.mode,
        beta=float(_setting(args, config, "beta", 0.5)),
        epochs=int(_setting(args, config, "epochs", 5)),
        learning_rate=float(_setting(args, config, "learning_rate", 1e-6)),
        warmup_ratio=float(_setting(args, config, "warmup_ratio", 0.03)),
        batch_size=int(_setting(args, config, "batch_size", 4)),
        embed_dim=int(_setting(args, config, "embed_dim", 32)),
        seed=int(_setting(args, config, "seed", 0)),
    )
    records = corpus.ingest(args.corpus)
    trainer.fit(records)
    trainer.policy_.save(args.model_out)
    trace = " ".join(f"{v:.6f}" for v in trainer.loss_trace_)
    print(f"trained {args.mode} policy on {len(records)} records; per-epoch loss: {trace}")
    return 0


def _iter_scoreable(path: str):
    """Yield (id, prompt, response) from a generations or corpus JSONL file."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no}: malformed JSON: {exc.msg}") from None
            entry_id = obj.get("candidate_id", obj.get("id"))
            if not isinstance(entry_id, str):
                raise ValueError(f"line {line_no}: missing 'candidate_id' or 'id'")
            for key in ("prompt", "response"):
                if not isinstance(obj.get(key), str):
                    raise ValueError(f"line {line_no}: missing or non-string field {key!r}")
            yield entry_id, obj["prompt"], obj["response"]


def cmd_score(args) -> int:
    model = Scorer.load(args.model)
    lines = []
    for entry_id, prompt, response in _iter_scoreable(args.generations):
        passage = reward.score_passage(model, prompt, response)
        obj = {
            "id": entry_id,
            "sentence_scores": list(passage.sentence_scores),
            "passage_score": passage.value,
        }
        lines.append(corpus.dumps_canonical(obj))
    _write_out("\n".join(lines) + "\n" if lines else "", args.out)
    return 0


def _candidate_sets(args) -> list[selector.CandidateSet]:
    """Group a generations file into scored candidate sets (--model or --scores)."""
    if args.model:
        return selector.score_external(args.generations, Scorer.load(args.model))
    if not args.scores:
        raise ValueError("provide --model or --scores")
    scores: dict[str, float] = {}
    with open(args.scores, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            obj = json.loads(line)
            if not isinstance(obj.get("id"), str) or "passage_score" not in obj:
                raise ValueError(f"scores line {line_no}: need 'id' and 'passage_score'")
            scores[obj["id"]] = float(obj["passage_score"])
    groups: dict[str, list[selector.Candidate]] = {}
    with open(args.generations, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            obj = json.loads(line)
            cid = obj.get("candidate_id")
            pid = obj.get("prompt_id")
            if not isinstance(cid, str) or not isinstance(pid, str):
                raise ValueError(f"line {line_no}: need 'prompt_id' and 'candidate_id'")
            if cid not in scores:
                raise ValueError(f"line {line_no}: no score for candidate {cid!r}")
            passage = reward.PassageScore((), (), scores[cid])
            groups.setdefault(pid, []).append(
                selector.Candidate(cid, obj.get("response", ""), passage)
            )
    return [selector.CandidateSet(pid, tuple(c)) for pid, c in groups.items()]


def cmd_select(args) -> int:
    sets = _candidate_sets(args)
    lines = []
    for cset in sets:
        chosen = selector.select(cset, args.n, args.mode, seed=args.seed)
        obj = {
            "prompt_id": cset.prompt_id,
            "n": args.n,
            "mode": args.mode,
            "chosen": chosen.id,
            "score": chosen.score.value,
        }
        lines.append(corpus.dumps_canonical(obj))
    _write_out("\n".join(lines) + "\n" if lines else "", args.out)
    return 0


def cmd_curve(args) -> int:
    sets = _candidate_sets(args)
    grid = [int(v) for v in args.grid.split(",") if v.strip()]
    result = selector.curve(sets, grid, draws=args.draws, seed=args.seed)
    _write_out(result.to_csv(), args.out)
    return 0


def cmd_rate(args) -> int:
    records = corpus.ingest(args.corpus)
    rates = {r.id: metrics.hallucination_rate(r) for r in records}
    for rec_id, rate in rates.items():
        print(f"{rec_id}\t{rate:.6f}")
    if rates:
        print(f"mean\t{sum(rates.values()) / len(rates):.6f}")
    if args.out:
        if not args.scores:
            raise ValueError("--out needs --scores to pair reward scores with rates")
        scores: dict[str, float] = {}
        with open(args.scores, encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                scores[obj["id"]] = float(obj["passage_score"])
        eval_records = []
        for record in records:
            if record.id not in scores:
                raise ValueError(f"no reward score for record {record.id!r}")
            eval_records.append(
                metrics.EvalRecord(record.id, scores[record.id], 1.0 - rates[record.id])
            )
        Path(args.out).write_text(metrics.points_csv(eval_records), encoding="utf-8", newline="\n")
    return 0


def cmd_correlate(args) -> int:
    xs: list[float] = []
    ys: list[float] = []
    with open(args.csv, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "id,reward_score,human_score":
            raise ValueError(f"unexpected CSV header {header!r}")
        for line_no, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"line {line_no}: expected 3 columns")
            xs.append(float(parts[1]))
            ys.append(float(parts[2]))
    r = metrics.pearson(xs, ys)
    if r is None:
        print("pearson_r=undefined (fewer than 2 points or zero variance)")
    else:
        print(f"pearson_r={r}")
    return 0


def cmd_serve(args) -> int:
    srv = server.create_server(
        args.tasks,
        args.out,
        port=args.port,
        ui_dir=args.ui_dir,
        responses_per_task=args.responses_per_task,
        verbose=True,
    )
    host, port = srv.server_address[0], srv.server_address[1]
    print(f"annotation backend on http://{host}:{port}/ (tasks={args.tasks}, out={args.out})")
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finespan",
        description="Span-annotated corpora, reward models, preference training, and selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a corpus JSONL file")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="corpus statistics as CSV")
    p.add_argument("corpus")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("condense", help="add condensed per-sentence labels")
    p.add_argument("corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_condense)

    p = sub.add_parser("train-rm", help="train a reward model")
    p.add_argument("corpus")
    p.add_argument("--density", choices=["sentence", "segment"], default="sentence")
    p.add_argument("--granularity", choices=["binary", "ternary"], default="binary")
    p.add_argument("--config", help="JSON or key=value config file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--model-out", dest="model_out", required=True)
    p.set_defaults(func=cmd_train_rm)

    p = sub.add_parser("eval-rm", help="evaluate a reward model checkpoint")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--density", choices=["sentence", "segment"], default="sentence")
    p.set_defaults(func=cmd_eval_rm)

    p = sub.add_parser("train-fdpo", help="train a policy with the fine-grained preference loss")
    p.add_argument("corpus")
    p.add_argument("--mode", choices=["ia", "da"], required=True)
    p.add_argument("--config", help="JSON or key=value config file")
    p.add_argument("--beta", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--warmup-ratio", dest="warmup_ratio", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--model-out", dest="model_out", required=True)
    p.set_defaults(func=cmd_train_fdpo)

    p = sub.add_parser("score", help="passage-score generations with a reward model")
    p.add_argument("generations", help="generations or corpus JSONL")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="best-of-n / worst-of-n selection per prompt")
    p.add_argument("generations")
    p.add_argument("--model")
    p.add_argument("--scores", help="score report JSONL instead of a model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=["best", "worst"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("curve", help="best-of-n mean/variance over a grid of n")
    p.add_argument("generations")
    p.add_argument("--model")
    p.add_argument("--scores")
    p.add_argument("--grid", default="1,4,16,64")
    p.add_argument("--draws", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("rate", help="hallucination rate per record")
    p.add_argument("corpus")
    p.add_argument("--scores", help="score report JSONL to pair with the rates")
    p.add_argument("--out", help="write id,reward_score,human_score CSV here")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("correlate", help="Pearson r between reward and human scores")
    p.add_argument("csv", help="CSV with header id,reward_score,human_score")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("serve", help="run the annotation workbench backend")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ui-dir", dest="ui_dir")
    p.add_argument("--responses-per-task", dest="responses_per_task", type=int, default=4)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
