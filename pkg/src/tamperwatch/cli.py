"""``tamperwatch`` command line.

Exit codes: 0 success, 1 unexpected failure, 2 missing input, 3 invalid
config or arguments, 4 numeric failure. Failures print exactly one line on
stderr of the form ``tamperwatch: error stage=<verb> kind=<kind> message=<text>``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .detectors import AnomalyScoreSeries
from .errors import IngestError, InvalidArgument, InvalidConfig, NumericFailure
from .evaluation import Threshold, ThresholdMethod, classify, metrics, ReportRow, scenario_report
from .nn.gradcheck import gradient_check, sequence_mse_problem

EXIT_MISSING, EXIT_CONFIG, EXIT_NUMERIC = 2, 3, 4
GRADCHECK_SEEDS = (0, 1, 2)
GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidConfig(f"bad arguments: {message}")


def _pick(requested: str | None, available, what: str) -> list[str]:
    if requested is None:
        return list(available)
    if requested not in available:
        raise InvalidConfig(f"{what} {requested!r} is not in the config")
    return [requested]


def _out(args) -> Path:
    return Path(args.out)


def cmd_synth(args) -> int:
    cfg = ex.load_config(args.config, args.seed)
    for camera in _pick(args.camera, cfg.cameras, "camera"):
        m = ex.synth(cfg, _out(args), camera)
        print(f"synth {camera}: {m.n_frames} frames {m.width}x{m.height}, split at {m.split_index}")
    return 0


def cmd_attack(args) -> int:
    cfg = ex.load_config(args.config, args.seed)
    for camera in _pick(args.camera, cfg.cameras, "camera"):
        for scenario in _pick(args.scenario, [s for s in ex.SCENARIOS if s in cfg.attacks],
                              "scenario"):
            starts = ex.attack(cfg, _out(args), camera, scenario)
            print(f"attack {camera}/{scenario}: instances at {starts}")
    return 0


def cmd_train(args) -> int:
    cfg = ex.load_config(args.config, args.seed)
    for camera in _pick(args.camera, cfg.cameras, "camera"):
        for kind in _pick(args.detector, [k for k in ex.DETECTORS if k in cfg.detectors],
                          "detector"):
            hist = ex.train_stage(cfg, _out(args), camera, kind)
            last = f"{hist[-1]:.6g}" if hist else "n/a"
            print(f"train {camera}/{kind}: {len(hist)} epochs, final loss {last}")
    return 0


def cmd_score(args) -> int:
    cfg = ex.load_config(args.config, args.seed)
    for camera in _pick(args.camera, cfg.cameras, "camera"):
        for kind in _pick(args.detector, [k for k in ex.DETECTORS if k in cfg.detectors],
                          "detector"):
            for scenario in _pick(args.scenario, [s for s in ex.SCENARIOS if s in cfg.attacks],
                                  "scenario"):
                s = ex.score_stage(cfg, _out(args), camera, kind, scenario)
                print(f"score {camera}/{scenario}/{kind}: {int(s.scored.sum())} frames scored")
    return 0


def _evaluate_files(args) -> int:
    """Evaluate one explicit scores/labels pair."""
    scores = AnomalyScoreSeries.from_csv(args.scores)
    if args.labels is None:
        raise InvalidConfig("--scores needs --labels")
    labels = ex.read_labels(args.labels)
    name = ex.DISPLAY.get(args.detector, "Detector")
    if args.threshold is not None:
        th = Threshold(float(args.threshold), ThresholdMethod(args.method), float("nan"))
        counts = classify(scores, th, labels)
        row = ReportRow(name, counts, metrics(counts), th.value)
    elif args.validation is not None:
        val = AnomalyScoreSeries.from_csv(args.validation)
        row = ex.evaluate_cell(scores, labels, val, args.method, args.param, name)
    else:
        raise InvalidConfig("--scores needs either --threshold or --validation")
    text, csv_text = scenario_report([row], args.scenario or "scenario")
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text)
    (out / "report.csv").write_text(csv_text)
    sys.stdout.write(text)
    return 0


def cmd_evaluate(args) -> int:
    if args.scores is not None:
        return _evaluate_files(args)
    cfg = ex.load_config(args.config, args.seed)
    for camera in _pick(args.camera, cfg.cameras, "camera"):
        for scenario in _pick(args.scenario, [s for s in ex.SCENARIOS if s in cfg.attacks],
                              "scenario"):
            ex.evaluate_stage(cfg, _out(args), camera, scenario)
            sys.stdout.write((_out(args) / "reports" / camera / f"{scenario}.txt").read_text())
    return 0


def cmd_run_all(args) -> int:
    cfg = ex.load_config(args.config, args.seed)
    rows = ex.run_all(cfg, _out(args))
    print(f"run-all: {len(rows)} evaluation rows written to {_out(args) / 'summary.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for seed in GRADCHECK_SEEDS:
        params, f = sequence_mse_problem(seed, timesteps=2, in_channels=1, hidden=8,
                                         height=4, width=4, grad_scale=args.perturb)
        err = gradient_check(params, f)
        worst = max(worst, err)
        print(f"gradcheck seed={seed} max_rel_error={err:.3e}")
    ok = worst < GRADCHECK_TOLERANCE
    print(f"gradcheck max_rel_error={worst:.3e} tolerance={GRADCHECK_TOLERANCE:.0e} "
          f"{'PASS' if ok else 'FAIL'}")
    if not ok:
        raise NumericFailure(f"max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:.0e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tamperwatch", description="Camera tamper detection experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, detector=False, scenario=False):
        sp.add_argument("--config", help="experiment config JSON (defaults when omitted)")
        sp.add_argument("--out", default="tamperwatch-out", help="experiment directory")
        sp.add_argument("--seed", type=int, help="master seed, overrides the config")
        sp.add_argument("--camera", help="restrict to one camera")
        if detector:
            sp.add_argument("--detector", choices=ex.DETECTORS)
        if scenario:
            sp.add_argument("--scenario", choices=ex.SCENARIOS)
        return sp

    common(sub.add_parser("synth", help="render clean footage")).set_defaults(fn=cmd_synth)
    common(sub.add_parser("attack", help="tamper the test footage"),
           scenario=True).set_defaults(fn=cmd_attack)
    common(sub.add_parser("train", help="train detectors"), detector=True).set_defaults(fn=cmd_train)
    common(sub.add_parser("score", help="score attacked footage"),
           detector=True, scenario=True).set_defaults(fn=cmd_score)
    ev = common(sub.add_parser("evaluate", help="threshold scores and write reports"),
                detector=True, scenario=True)
    ev.add_argument("--scores", help="explicit score CSV (skips the experiment layout)")
    ev.add_argument("--labels", help="labels CSV for --scores")
    ev.add_argument("--validation", help="clean validation score CSV to calibrate from")
    ev.add_argument("--threshold", type=float, help="fixed threshold value")
    ev.add_argument("--method", default="mean_plus_k_sigma",
                    choices=[m.value for m in ThresholdMethod])
    ev.add_argument("--param", type=float, help="k for mean_plus_k_sigma, margin for max_validation")
    ev.set_defaults(fn=cmd_evaluate)
    common(sub.add_parser("run-all", help="full camera x attack x detector matrix"),
           detector=False).set_defaults(fn=cmd_run_all)
    gc = sub.add_parser("gradcheck", help="finite-difference check of the ConvLSTM backward pass")
    gc.add_argument("--perturb", type=float, default=1.0, help=argparse.SUPPRESS)
    gc.set_defaults(fn=cmd_gradcheck)
    return p


def _error_kind(exc: BaseException) -> tuple[str, int]:
    if isinstance(exc, (IngestError, FileNotFoundError)):
        return "missing-input", EXIT_MISSING
    if isinstance(exc, (InvalidConfig, InvalidArgument)):
        return "invalid-config", EXIT_CONFIG
    if isinstance(exc, (NumericFailure, FloatingPointError)):
        return "numeric-failure", EXIT_NUMERIC
    return "internal", 1


def main(argv: list[str] | None = None) -> int:
    verb = "args"
    try:
        args = build_parser().parse_args(argv)
        verb = args.verb
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with np.errstate(over="ignore", under="ignore"):
            return args.fn(args)
    except Exception as exc:  # one parsable line, never a traceback
        kind, code = _error_kind(exc)
        message = " ".join(str(exc).split()) or type(exc).__name__
        print(f"tamperwatch: error stage={verb} kind={kind} message={message}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
