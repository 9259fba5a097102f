"""Command-line entry point.

Subcommands: gen-data, train, eval, ablate, export-graph, selfcheck.
Exit codes: 0 success, 1 usage error, 2 validation error, 3 selfcheck failure.
All randomness flows from --seed through named streams (data / init /
shuffle / split), so two runs with identical inputs produce identical
outputs; the per-scene timing file is the one deliberately non-deterministic
artifact.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, apply_to_model, load_checkpoint, restore_trainer, save_trainer
from .config import ConfigError, RunConfig
from .datasets import load_dataset, write_dataset
from .dot_export import line_graph_dot, scene_graph_dot
from .metrics import evaluate_outputs, score_triplets
from .model import SceneGraphModel, make_batch
from .scenes import SceneError, Vocabulary, load_scene_json, load_vocabulary
from .synth import PREDICATE_NAMES, SynthConfig, generate_scenes
from .training import Trainer

USAGE_ERROR, VALIDATION_ERROR, SELFCHECK_ERROR = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="linesg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--objects-min", type=int, default=4)
    g.add_argument("--objects-max", type=int, default=9)
    g.add_argument("--predicates", default=",".join(PREDICATE_NAMES),
                   help="comma-separated rule subset")
    g.add_argument("--stack-prob", type=float, default=0.35)
    g.add_argument("--attach-prob", type=float, default=0.1)
    g.add_argument("--align-prob", type=float, default=0.0)
    g.add_argument("--area", default="1.6x1.2", help="desk area, WxD meters")
    g.add_argument("--points", type=int, default=256)

    t = sub.add_parser("train", help="run staged training")
    t.add_argument("--config", required=True)
    t.add_argument("--stage", choices=["1", "2", "all"], default="all")
    t.add_argument("--resume", default=None, help="checkpoint to resume from")
    for flag in ("--data-dir", "--out-dir", "--task", "--strategy", "--link-mode"):
        t.add_argument(flag, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--stage1-epochs", type=int, default=None)
    t.add_argument("--stage2-epochs", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--linegnn-layers", type=int, default=None)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--task", default=None)
    e.add_argument("--link-mode", choices=["fc", "lp", "gt"], default=None)
    e.add_argument("--strategy", choices=["pre", "post", "none", "none+lp"], default=None)
    e.add_argument("--k", default=None, help="comma-separated recall cutoffs")
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.add_argument("--out-dir", default=None)

    a = sub.add_parser("ablate", help="sweep a factor over seeds")
    a.add_argument("--config", required=True)
    a.add_argument("--sweep", choices=["depth", "strategy", "linkmode"], required=True)
    a.add_argument("--seeds", type=int, default=3)
    a.add_argument("--out-dir", default=None)
    a.add_argument("--stage1-epochs", type=int, default=None)
    a.add_argument("--stage2-epochs", type=int, default=None)
    a.add_argument("--lr", type=float, default=None)

    x = sub.add_parser("export-graph", help="DOT export of predicted vs GT graphs")
    x.add_argument("--ckpt", required=True)
    x.add_argument("--scene", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--vocab", default=None)
    x.add_argument("--line-graph", action="store_true")
    x.add_argument("--top-k", type=int, default=None,
                   help="export this many ranked triplets (default: argmax per pair)")

    s = sub.add_parser("selfcheck", help="run built-in oracles; exit 3 on failure")
    s.add_argument("--quick", action="store_true", help="smaller gradient suite")
    return parser


# ---------------------------------------------------------------------------
# command implementations


def cmd_gen_data(args) -> int:
    try:
        width, depth = (float(v) for v in args.area.split("x"))
        predicates = tuple(p.strip() for p in args.predicates.split(",") if p.strip())
        cfg = SynthConfig(num_scenes=args.scenes, objects_min=args.objects_min,
                          objects_max=args.objects_max, area=(width, depth),
                          stack_prob=args.stack_prob, attach_prob=args.attach_prob,
                          align_prob=args.align_prob, points_per_object=args.points,
                          predicates=predicates)
        scenes, vocab = generate_scenes(cfg, args.seed)
        write_dataset(args.out, scenes, vocab, args.seed)
    except (ValueError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    total_rel = sum(len(s.relationships) for s in scenes)
    print(f"wrote {len(scenes)} scenes ({total_rel} relationships) to {args.out}")
    return 0


def _load_run(args) -> tuple[RunConfig, dict, Vocabulary]:
    run = RunConfig.from_file(args.config)
    overrides = {key: getattr(args, attr) for key, attr in (
        ("data_dir", "data_dir"), ("out_dir", "out_dir"), ("task", "task"),
        ("seed", "seed"), ("strategy", "strategy"), ("link_mode", "link_mode"),
        ("stage1_epochs", "stage1_epochs"), ("stage2_epochs", "stage2_epochs"),
        ("lr", "lr"), ("linegnn_layers", "linegnn_layers"),
    ) if hasattr(args, attr)}
    run.apply_overrides(overrides)
    splits, vocab = load_dataset(run.data_dir)
    return run, splits, vocab


def cmd_train(args) -> int:
    try:
        run, splits, vocab = _load_run(args)
        out = Path(run.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        run.echo(out)
        model_cfg = run.model_config(vocab.num_object_classes, vocab.num_predicates)
        model = SceneGraphModel(model_cfg, seed=run.seed)
        trainer = Trainer(model, run.train_config())
        if args.resume:
            ckpt = load_checkpoint(args.resume)
            if ckpt.model_config != model_cfg:
                raise ConfigError("checkpoint config does not match run config")
            restore_trainer(ckpt, trainer)
        elif args.stage == "2":
            raise ConfigError("--stage 2 needs --resume with a stage-1 checkpoint")
        train = [make_batch(s, model_cfg) for s in splits["train"]]
        val = [make_batch(s, model_cfg) for s in splits["val"]]
        if args.stage in ("1", "all") and trainer.stage == 1:
            trainer.train_stage1(train, val)
            save_trainer(out / "stage1.ckpt", trainer)
        if args.stage in ("2", "all"):
            trainer.train_stage2(train, val)
            save_trainer(out / "final.ckpt", trainer)
        trainer.log.write_csv(out / "train_log.csv")
    except (ConfigError, CheckpointError, SceneError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    print(f"training complete; artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    try:
        run, splits, vocab = _load_run(args)
        ckpt = load_checkpoint(args.ckpt)
        model_cfg = ckpt.model_config
        if args.task and args.task != model_cfg.task:
            raise ConfigError(f"checkpoint was trained for task {model_cfg.task!r}")
        if args.link_mode:
            model_cfg = replace(model_cfg, link_mode=args.link_mode)
        if args.strategy:
            model_cfg = replace(model_cfg, strategy=args.strategy)
        model = SceneGraphModel(model_cfg, seed=run.seed)
        apply_to_model(ckpt, model)
        ks = [int(v) for v in args.k.split(",")] if args.k else run.ks()
        scenes = splits[args.split]
        if not scenes:
            raise ConfigError(f"split {args.split!r} is empty")
        out = Path(args.out_dir) if args.out_dir else Path(run.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        run.echo(out)
        pairs = []
        timing = ["scene,seconds"]
        for scene in scenes:
            batch = make_batch(scene, model_cfg)
            start = time.perf_counter()
            outputs = model.forward(batch)
            timing.append(f"{scene.scan_id},{time.perf_counter() - start:.6f}")
            pairs.append((batch, outputs))
        report = evaluate_outputs(pairs, model_cfg.task, ks)
        report.write_csv(out / "metrics.csv")
        report.write_json(out / "metrics.json")
        report.write_per_class_csv(out / "per_class.csv", vocab.predicates)
        (out / "timing.csv").write_text("\n".join(timing) + "\n")
    except (ConfigError, CheckpointError, SceneError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    for metric in sorted(report.values):
        cells = ", ".join(f"@{k}={report.values[metric][k]:.3f}" for k in ks)
        print(f"{metric}: {cells}")
    return 0


def cmd_ablate(args) -> int:
    try:
        run, splits, vocab = _load_run(args)
        out = Path(args.out_dir) if args.out_dir else Path(run.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        run.echo(out)
        sweeps = {
            "depth": [("linegnn_layers", v) for v in range(1, 8)],
            "strategy": [("strategy", v) for v in ("pre", "post", "none", "none+lp")],
            "linkmode": [("link_mode", v) for v in ("fc", "lp", "gt")],
        }
        ks = run.ks()
        rows = []
        for field_name, value in sweeps[args.sweep]:
            per_seed = {("r", k): [] for k in ks}
            per_seed.update({("ngc_r", k): [] for k in ks})
            per_seed.update({("m_r", k): [] for k in ks})
            for seed_offset in range(args.seeds):
                seed = run.seed + seed_offset
                cfg = run.model_config(vocab.num_object_classes, vocab.num_predicates)
                cfg = replace(cfg, **{field_name: value})
                model = SceneGraphModel(cfg, seed=seed)
                tcfg = replace(run.train_config(), seed=seed)
                trainer = Trainer(model, tcfg)
                train = [make_batch(s, cfg) for s in splits["train"]]
                test = [make_batch(s, cfg) for s in splits["test"]]
                trainer.train_stage1(train)
                trainer.train_stage2(train)
                report = evaluate_outputs([(b, model.forward(b)) for b in test],
                                          cfg.task, ks)
                for metric in ("r", "ngc_r", "m_r"):
                    for k in ks:
                        per_seed[(metric, k)].append(report.get(metric, k))
            for (metric, k), values in per_seed.items():
                rows.append({"sweep": args.sweep, "value": value, "metric": metric,
                             "k": k, "mean": float(np.mean(values)),
                             "std": float(np.std(values)), "seeds": args.seeds})
        lines = ["sweep,value,metric,k,mean,std,seeds"]
        for r in rows:
            lines.append(f"{r['sweep']},{r['value']},{r['metric']},{r['k']},"
                         f"{r['mean']:.6f},{r['std']:.6f},{r['seeds']}")
        (out / f"ablate_{args.sweep}.csv").write_text("\n".join(lines) + "\n")
    except (ConfigError, CheckpointError, SceneError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    print(f"wrote {out / f'ablate_{args.sweep}.csv'}")
    return 0


def cmd_export_graph(args) -> int:
    try:
        ckpt = load_checkpoint(args.ckpt)
        model = SceneGraphModel(ckpt.model_config, seed=0)
        apply_to_model(ckpt, model)
        scene = load_scene_json(args.scene)
        if isinstance(scene, list):
            scene = scene[0]
        if args.vocab:
            vocab = load_vocabulary(args.vocab)
        else:
            sidecar = Path(args.scene).parent.parent / "vocab.json"
            if sidecar.exists():
                vocab = load_vocabulary(sidecar)
            else:
                cfg = ckpt.model_config
                vocab = Vocabulary([f"class_{i}" for i in range(cfg.num_object_classes)],
                                   [f"pred_{i}" for i in range(cfg.num_predicates)])
        batch = make_batch(scene, model.cfg)
        outputs = model.forward(batch)
        if args.top_k:
            preds = score_triplets(outputs, batch, model.cfg.task)[:args.top_k]
        else:
            probs = outputs.pred_probs.data
            preds = [t for t in score_triplets(outputs, batch, model.cfg.task)
                     if int(probs[batch.graph.edge_index(t.subject, t.object)].argmax()) == t.predicate]
        classes = None
        if outputs.obj_probs is not None:
            classes = outputs.obj_probs.data.argmax(axis=1)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gt.dot").write_text(scene_graph_dot(scene, vocab, name="ground_truth"))
        (out / "pred.dot").write_text(scene_graph_dot(scene, vocab, preds,
                                                      predicted_classes=classes,
                                                      name="predicted"))
        if args.line_graph:
            (out / "line.dot").write_text(line_graph_dot(batch.line))
    except (ConfigError, CheckpointError, SceneError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    print(f"wrote DOT files to {out}")
    return 0


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    results = run_selfcheck(quick=args.quick)
    width = max(len(name) for name, _, _ in results)
    failed = False
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        failed = failed or not ok
    return SELFCHECK_ERROR if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "eval": cmd_eval,
        "ablate": cmd_ablate,
        "export-graph": cmd_export_graph,
        "selfcheck": cmd_selfcheck,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
