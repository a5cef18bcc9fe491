"""Command-line surface.

Subcommands: gen-data, preprocess, train, evaluate, ablate, predict,
importance, export-attention, gradcheck. Every command accepts --seed,
--config <file> (flat key = value TrainConfig fields; flags override), and
--out <dir>. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluation, importance as importance_mod, model_io
from .config import make_config, parse_config_file
from .data import SplitSpec, derive_features, encode, load_table, split, write_frame, write_table
from .errors import DataError, MhasrfError, NumericalError
from .synthetic import SignalConfig, generate_synthetic
from .training import grad_check, gradcheck_fixture, train


class UsageError(MhasrfError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise UsageError(message)


def _common_flags(parser):
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("--config", default=None, help="flat key = value config file")
    parser.add_argument("--out", default=".", help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="mhasrf",
                     description="Attention-weighted soft random forest for no-show prediction")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-data", parents=[], help="write a synthetic appointment CSV")
    _common_flags(p)
    p.add_argument("--rows", type=int, required=True, help="number of appointments")
    p.add_argument("--base-rate", type=float, default=None)
    p.add_argument("--reason-weight", type=float, default=None)
    p.add_argument("--type-weight", type=float, default=None)
    p.add_argument("--history-weight", type=float, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("preprocess", help="clean, derive, and encode a CSV")
    _common_flags(p)
    p.add_argument("--data", required=True, help="input appointment CSV")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="fit the model and write model + history")
    _common_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="baseline comparison report")
    _common_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="three-variant ablation report")
    _common_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("predict", help="score a CSV with a saved model")
    _common_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("importance", help="feature-importance report")
    _common_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="train",
                   help="which side of the seeded split to evaluate on")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("export-attention", help="per-sample, per-tree attention CSV")
    _common_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--rows", type=int, default=32, help="batch size to export")
    p.set_defaults(func=cmd_export_attention)

    p = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    _common_flags(p)
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _resolve_config(args, **overrides):
    file_values = parse_config_file(args.config) if args.config else None
    return make_config(file_values, seed=args.seed, **overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_encoded(path):
    table = derive_features(load_table(path))
    return encode(table), table


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    config = _resolve_config(args)
    signal = SignalConfig()
    for flag, attr in [("base_rate", "base_rate"), ("reason_weight", "reason_weight"),
                       ("type_weight", "type_weight"), ("history_weight", "history_weight")]:
        value = getattr(args, flag)
        if value is not None:
            setattr(signal, attr, value)
    table = generate_synthetic(args.rows, config.seed, signal)
    out = _out_dir(args) / "appointments.csv"
    write_table(table, out)
    no_show = sum(r.label for r in table.rows)
    print(f"wrote {len(table)} rows to {out} ({no_show} no-shows, seed {config.seed})")
    return 0


def cmd_preprocess(args) -> int:
    out = _out_dir(args)
    frame, table = _load_encoded(args.data)
    write_frame(frame, out / "features.csv")
    (out / "cleaning_report.txt").write_text(table.cleaning.text(), encoding="utf-8")
    for line in table.cleaning.lines():
        print(line)
    print(f"encoded {frame.n_rows} rows x {frame.n_features} features -> {out / 'features.csv'}")
    return 0


def _split_frames(args, config):
    frame, table = _load_encoded(args.data)
    spec = SplitSpec(train_fraction=args.train_fraction, seed=config.seed)
    train_frame, test_frame = split(frame, spec)
    return frame, table, train_frame, test_frame


def cmd_train(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    _, table, train_frame, test_frame = _split_frames(args, config)
    model, history = train(train_frame, test_frame, config)
    model_io.save_model(model, out / "model.mhasrf")
    history.write_csv(out / "history.csv")
    (out / "cleaning_report.txt").write_text(table.cleaning.text(), encoding="utf-8")
    last = history.records[-1]
    print(f"trained on {train_frame.n_rows} rows ({test_frame.n_rows} held out), "
          f"final train loss {last.train_loss:.4f}, test loss {last.test_loss:.4f}")
    print(f"model -> {out / 'model.mhasrf'}")
    return 0


def cmd_evaluate(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    _, _, train_frame, test_frame = _split_frames(args, config)
    rows = evaluation.compare_models(train_frame, test_frame, config)
    text = evaluation.render_report(rows, "Baseline comparison (held-out test set)")
    (out / "comparison.txt").write_text(text, encoding="utf-8")
    evaluation.write_report_csv(rows, out / "comparison.csv")
    print(text, end="")
    return 0


def cmd_ablate(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    _, _, train_frame, test_frame = _split_frames(args, config)
    rows = evaluation.ablation_run(train_frame, test_frame, config)
    text = evaluation.render_report(rows, "Ablation study (held-out test set)")
    (out / "ablation.txt").write_text(text, encoding="utf-8")
    evaluation.write_report_csv(rows, out / "ablation.csv")
    print(text, end="")
    return 0


def cmd_predict(args) -> int:
    out = _out_dir(args)
    model = model_io.load_model(args.model)
    table = derive_features(load_table(args.data))
    frame = encode(table, reference=model)
    probs = model.predict_proba(frame.X)
    classes = np.argmax(probs, axis=1)
    path = out / "predictions.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("patient_id,date,appointment_time,p_show,p_no_show,"
                     "predicted_class,predicted_status\n")
        for i, (pid, date, minutes) in enumerate(frame.row_keys):
            status = "no-show" if classes[i] == 1 else "show"
            handle.write(f"{pid},{date},{minutes:g},{probs[i, 0]!r},{probs[i, 1]!r},"
                         f"{classes[i]},{status}\n")
    print(f"scored {frame.n_rows} rows -> {path}")
    return 0


def cmd_importance(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    model = model_io.load_model(args.model)
    table = derive_features(load_table(args.data))
    frame = encode(table, reference=model)
    if args.split != "all":
        spec = SplitSpec(train_fraction=args.train_fraction, seed=config.seed)
        train_frame, test_frame = split(frame, spec)
        frame = train_frame if args.split == "train" else test_frame
    report = importance_mod.model_importance(model, frame)
    report.write_csv(out / "importance.csv")
    report.write_json(out / "importance.json")
    top = report.ranking()[:5]
    print(f"importance over {frame.n_rows} rows ({args.split}); top features: {', '.join(top)}")
    print(f"reports -> {out / 'importance.csv'}, {out / 'importance.json'}")
    return 0


def cmd_export_attention(args) -> int:
    out = _out_dir(args)
    model = model_io.load_model(args.model)
    table = derive_features(load_table(args.data))
    frame = encode(table, reference=model)
    batch = frame.subset(np.arange(min(args.rows, frame.n_rows)))
    path = out / "attention.csv"
    evaluation.export_attention(model, batch, path)
    print(f"exported {batch.n_rows} x {model.forest.n_trees} attention weights -> {path}")
    return 0


def cmd_gradcheck(args) -> int:
    config = _resolve_config(args)
    model, batch = gradcheck_fixture(config.seed)
    report = grad_check(model, batch, step=args.step)
    out = _out_dir(args)
    text = "\n".join(report.lines()) + "\n"
    (out / "gradcheck.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0 if report.passed else 3


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
