#!/usr/bin/env python3
"""
FastTab: línea de comandos (synth, train-toy, infer, eval, bench, gradcheck)
"""

import argparse
import copy
import json
import logging
import logging.config
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import DEFAULTS, LOGGING_CONFIG, ensure_log_dir
from models.base import to_jsonable
from models.config import HEAD_VARIANTS, FastTabConfig
from models.evaluation import METRIC_COLUMNS, EvaluationReport
from models.sample import AnonymMethod, Sample
from models.structure import TableStructure
from modules.errors import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, ConfigurationError, FastTabError, \
    InputError
from modules.job_manager import JobManager
from modules.numerics import Rng, derive_seed

logger = logging.getLogger("fasttab")


def configure_logging(verbose: bool = False):
    """Aplicar LOGGING_CONFIG; --verbose baja todo a DEBUG"""
    ensure_log_dir()
    config = copy.deepcopy(LOGGING_CONFIG)
    if verbose:
        config["root"]["level"] = "DEBUG"
        config["handlers"]["console"]["level"] = "DEBUG"
    logging.config.dictConfig(config)


def write_json(path: Optional[str], data) -> Optional[Path]:
    if not path:
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(data), f, indent=2)
    return path


def load_config(value: str) -> FastTabConfig:
    """'toy', 'small', 'full:<dataset>' o una ruta JSON"""
    if value == "toy":
        return FastTabConfig.toy()
    if value == "small":
        return FastTabConfig.small()
    if value.startswith("full"):
        _, _, dataset = value.partition(":")
        try:
            return FastTabConfig.full(dataset or "pubtabnet")
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
    try:
        return FastTabConfig.load(value)
    except OSError as e:
        raise ConfigurationError(f"no se pudo leer la configuración {value}: {e}") from e
    except ValueError as e:
        raise ConfigurationError(f"configuración inválida {value}: {e}") from e


def parse_float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"lista de números inválida: {value}") from e


def parse_int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"lista de enteros inválida: {value}") from e


def gt_structure(sample: Sample) -> TableStructure:
    from modules.structure import build_structure

    return build_structure(sample.grid, sample.spans)


def predict(model, samples: Sequence[Sample], curved: bool = False, trm_steps: Optional[int] = None,
            parallel: bool = True) -> List[Tuple[str, TableStructure, TableStructure, float]]:
    """Inferir cada muestra y devolver (id, predicción, GT, latencia en ms) en orden"""
    from modules.pipeline import infer

    def run_one(sample: Sample):
        result = infer(model, sample.image, curved=curved, trm_steps=trm_steps)
        return sample.id, result.structure, gt_structure(sample), result.latency_us / 1000.0

    manager = JobManager(max_workers=None if parallel else 1)
    try:
        return manager.map_ordered(run_one, samples, desc="infer")
    except Exception:
        for job_id, error in manager.failed_jobs().items():
            logger.error(f"Inferencia fallida {job_id}: {error}")
        raise


# ------------------------------------------------------------------ comandos

def cmd_synth(args) -> int:
    from modules.data import generate_dataset, parse_caps, save_dataset

    caps = parse_caps(args.caps)
    samples = generate_dataset(args.n, args.seed, caps, style=args.style, anonymise_method=args.anonymise,
                               rotate_alpha=args.rotate, K=args.K)
    index = save_dataset(samples, args.out)
    complex_count = sum(1 for s in samples if s.is_complex)
    print(f"✅ {len(samples)} muestras en {index} ({complex_count} complejas)")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    from modules.data import load_dataset
    from modules.metrics import Evaluator
    from modules.training import train_toy
    from modules.weights import save_weights

    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    dataset = load_dataset(args.data)
    model, history = train_toy(config, dataset, args.epochs, seed=config.seed, batch_size=args.batch_size)
    save_weights(model, args.out)

    history_path = history.save_json(args.history or f"{args.out}.history.json")
    logger.info(f"Historial guardado en {history_path}: {history.get_summary()}")
    if args.eval_train:
        report = Evaluator(["steds"]).evaluate_many(predict(model, dataset), label="train")
        write_json(f"{args.out}.train_eval.json", report.to_dict())
        print(f"📊 S-TEDS en entrenamiento: {report.mean('steds'):.4f}")
    final = history.epochs[-1] if history.epochs else None
    print(f"✅ Entrenamiento {history.status}: {len(history.epochs)} épocas, {history.steps} pasos"
          + (f", {final.describe()}" if final else ""))
    return EXIT_OK


def cmd_infer(args) -> int:
    from modules.data import read_image
    from modules.pipeline import infer
    from modules.weights import load_model

    model = load_model(args.model)
    result = infer(model, read_image(args.image), curved=args.curved, head_variant=args.head,
                   trm_steps=args.trm_steps)
    if args.out:
        out = Path(args.out)
        if out.suffix.lower() == ".html":
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(result.html, encoding="utf-8")
        else:
            write_json(args.out, result.to_dict())
    print(result.html)
    logger.info(f"Inferencia {result.grid.R}x{result.grid.C} en {result.latency_us / 1000.0:.2f} ms")
    return EXIT_OK


def _metrics(value: str) -> List[str]:
    return list(METRIC_COLUMNS) if value == "all" else [value]


def _print_report(report: EvaluationReport):
    aggregate = report.aggregate()
    for column in report.columns():
        values = {name: aggregate[name][column] for name in ("overall", "simple", "complex")}
        cells = ", ".join(f"{name}={'-' if v is None else f'{v:.4f}'} (n={aggregate[name]['count']})"
                          for name, v in values.items())
        print(f"📊 [{report.label}] {column}: {cells}")
    latency = report.extra.get("latency")
    if latency:
        print(f"⏱️ [{report.label}] latencia p50={latency['p50_ms']:.2f} ms, p95={latency['p95_ms']:.2f} ms")


def cmd_eval(args) -> int:
    from modules.data import anonymise_sample, load_dataset, rotate_sample
    from modules.metrics import Evaluator, parse_prediction
    from modules.weights import load_model

    metrics = _metrics(args.metric)
    evaluator = Evaluator(metrics)
    gt_samples = load_dataset(args.gt)

    if args.pred_dir:
        pred_dir = Path(args.pred_dir)
        items = []
        for sample in gt_samples:
            path = pred_dir / f"{sample.id}.html"
            if not path.exists():
                raise InputError(f"falta la predicción {path}")
            items.append((sample.id, parse_prediction(path.read_text(encoding="utf-8"), sample.id),
                          gt_structure(sample), None))
        report = evaluator.evaluate_many(items)
        write_json(args.report, report.to_dict())
        _print_report(report)
        return EXIT_OK

    if not args.model:
        raise ConfigurationError("eval requiere --pred-dir o --model")
    model = load_model(args.model)
    samples = load_dataset(args.data) if args.data else gt_samples

    if args.rotate_sweep:
        sweep_evaluator = Evaluator(["steds"] + [m for m in metrics if m != "steds"])
        rows = []
        for alpha in args.rotate_sweep:
            rotated = [rotate_sample(s, alpha, Rng(derive_seed(args.seed, f"rotate{alpha}:{s.id}")),
                                     model.config.curved.K) for s in samples]
            report = sweep_evaluator.evaluate_many(predict(model, rotated, curved=True), label=f"alpha={alpha:g}")
            frame = report.to_frame()
            scores = pd.to_numeric(frame["steds"], errors="coerce") if "steds" in frame else pd.Series(dtype=float)
            rows.append({"alpha": alpha, "steds_mean": float(scores.mean()) if len(scores) else None,
                         "steds_std": float(scores.std(ddof=0)) if len(scores) else None,
                         "report": report.to_dict()})
            print(f"📐 α={alpha:g}°: S-TEDS {rows[-1]['steds_mean']:.4f} ± {rows[-1]['steds_std']:.4f}")
        write_json(args.report, {"schema": DEFAULTS["report_schema"], "sweep": "rotation", "rows": rows})
        return EXIT_OK

    if args.anonymise:
        methods = list(AnonymMethod) if args.anonymise == "all" else [AnonymMethod.parse(args.anonymise)]
        reports = [evaluator.evaluate_many(predict(model, samples, curved=args.curved), label="Baseline")]
        for method in methods:
            anonymised = [anonymise_sample(s, method, Rng(derive_seed(args.seed, f"{method.value}:{s.id}")))
                          for s in samples]
            reports.append(evaluator.evaluate_many(predict(model, anonymised, curved=args.curved),
                                                   label=method.label))
        for report in reports:
            _print_report(report)
        write_json(args.report, {"schema": DEFAULTS["report_schema"], "sweep": "anonymisation",
                                 "rows": [r.to_dict() for r in reports]})
        return EXIT_OK

    report = evaluator.evaluate_many(predict(model, samples, curved=args.curved))
    write_json(args.report, report.to_dict())
    _print_report(report)
    return EXIT_OK


def _parse_models(values: Sequence[str]) -> List[Tuple[Optional[str], str]]:
    models = []
    for value in values:
        variant, sep, path = value.partition("=")
        if sep and variant in HEAD_VARIANTS:
            models.append((variant, path))
        else:
            models.append((None, value))
    return models


def bench_model(model, samples: Sequence[Sample], repeat: int, curved: bool = False,
                trm_steps: Optional[int] = None) -> Dict:
    """Inferencia secuencial, batch 1, sin redimensionar; latencias por imagen y por etapa"""
    from modules.metrics import s_teds
    from modules.pipeline import infer

    latencies: List[float] = []
    stages: List[Dict[str, float]] = []
    scores: List[float] = []
    for iteration in range(repeat):
        for sample in samples:
            result = infer(model, sample.image, curved=curved, trm_steps=trm_steps)
            latencies.append(result.latency_us / 1000.0)
            stages.append(result.timings)
            if iteration == 0:
                scores.append(s_teds(result.structure, gt_structure(sample)))
    values = np.asarray(latencies)
    total_s = float(values.sum()) / 1000.0
    stage_means = pd.DataFrame(stages).fillna(0.0).mean() / 1000.0
    return {
        "images": len(values),
        "p50_ms": float(np.percentile(values, 50)),
        "p95_ms": float(np.percentile(values, 95)),
        "mean_ms": float(values.mean()),
        "fps": len(values) / total_s if total_s > 0 else None,
        "steds": float(np.mean(scores)) if scores else None,
        "stage_mean_ms": {k: float(v) for k, v in stage_means.items()},
    }


def cmd_bench(args) -> int:
    from modules.data import load_dataset
    from modules.weights import load_model

    if args.repeat < 1:
        raise ConfigurationError(f"--repeat debe ser >= 1, recibido {args.repeat}")
    samples = load_dataset(args.data)
    if args.limit:
        samples = samples[:args.limit]
    rows = []
    for variant, path in _parse_models(args.model):
        model = load_model(path)
        actual = model.config.axial.head_variant
        if variant is not None and variant != actual:
            raise ConfigurationError(f"{path}: variante '{actual}', se indicó '{variant}'")
        if args.head_sweep and variant is None:
            raise ConfigurationError("--head-sweep requiere --model VARIANTE=RUTA")
        for T in (args.trm_sweep or [None]):
            row = bench_model(model, samples, args.repeat, curved=args.curved, trm_steps=T)
            row.update({"model": str(path), "head_variant": actual, "T": T if T is not None else model.config.trm.T})
            rows.append(row)
            print(f"⏱️  {actual} T={row['T']}: p50={row['p50_ms']:.2f} ms p95={row['p95_ms']:.2f} ms "
                  f"FPS={row['fps']:.2f} S-TEDS={row['steds']:.4f}")
    write_json(args.report, {"schema": DEFAULTS["report_schema"], "repeat": args.repeat, "rows": rows})
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from modules.training import gradcheck_losses

    config = load_config(args.config)
    start = time.perf_counter()
    reports = gradcheck_losses(config, seed=args.seed, eps=args.eps, tol=args.tol, max_coords=args.max_coords)
    failed = [term for term, report in reports.items() if not report.passed]
    for term, report in reports.items():
        mark = "✅" if report.passed else "❌"
        print(f"{mark} {term}: max rel error {report.max_rel_error:.3e} ({report.checked} coords)")
    write_json(args.report, {"schema": DEFAULTS["report_schema"], "elapsed_s": time.perf_counter() - start,
                             "terms": {k: v.to_dict() for k, v in reports.items()}})
    if failed:
        logger.error(f"gradcheck fallido en {failed}")
        return EXIT_NUMERIC
    return EXIT_OK


# -------------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fasttab", description="Reconocimiento de estructura de tablas FastTab")
    parser.add_argument("--verbose", "-v", action="store_true", help="logs en nivel DEBUG")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth", help="generar un dataset sintético")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--caps", default="6,6,2,2", help="R,C,RS,CS o preset de dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--anonymise", default=None, help="método de anonimización o 'random'")
    synth.add_argument("--rotate", type=float, default=0.0, help="alpha en grados")
    synth.add_argument("--style", choices=["ruled", "borderless", "mixed"], default="ruled")
    synth.add_argument("--K", type=int, default=DEFAULTS["curved_samples"])
    synth.set_defaults(func=cmd_synth)

    train = sub.add_parser("train-toy", help="entrenar un modelo pequeño")
    train.add_argument("--config", default="small", help="toy, small, full:<dataset> o ruta JSON")
    train.add_argument("--data", required=True)
    train.add_argument("--out", required=True, help="archivo de pesos")
    train.add_argument("--epochs", type=int, default=10)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--history", default=None)
    train.add_argument("--eval-train", action="store_true", help="S-TEDS sobre el set de entrenamiento")
    train.set_defaults(func=cmd_train_toy)

    inf = sub.add_parser("infer", help="inferir la estructura de una imagen")
    inf.add_argument("--model", required=True)
    inf.add_argument("--image", required=True)
    inf.add_argument("--out", default=None, help=".html o .json")
    inf.add_argument("--curved", action="store_true")
    inf.add_argument("--head", choices=HEAD_VARIANTS, default=None)
    inf.add_argument("--trm-steps", type=int, default=None)
    inf.set_defaults(func=cmd_infer)

    ev = sub.add_parser("eval", help="evaluar predicciones contra el GT")
    ev.add_argument("--gt", required=True)
    ev.add_argument("--pred-dir", default=None)
    ev.add_argument("--model", default=None)
    ev.add_argument("--data", default=None)
    ev.add_argument("--metric", choices=list(METRIC_COLUMNS) + ["all"], default="steds")
    ev.add_argument("--report", default=None)
    ev.add_argument("--anonymise", default=None, help="método o 'all'")
    ev.add_argument("--rotate-sweep", type=parse_float_list, default=None)
    ev.add_argument("--curved", action="store_true")
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="latencia p50/p95 y FPS")
    bench.add_argument("--model", action="append", required=True, help="RUTA o VARIANTE=RUTA")
    bench.add_argument("--data", required=True)
    bench.add_argument("--repeat", type=int, default=1)
    bench.add_argument("--limit", type=int, default=None)
    bench.add_argument("--trm-sweep", type=parse_int_list, default=None)
    bench.add_argument("--head-sweep", action="store_true")
    bench.add_argument("--curved", action="store_true")
    bench.add_argument("--report", default=None)
    bench.set_defaults(func=cmd_bench)

    grad = sub.add_parser("gradcheck", help="verificar gradientes por término de pérdida")
    grad.add_argument("--config", default="toy")
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--eps", type=float, default=1e-5)
    grad.add_argument("--tol", type=float, default=1e-3)
    grad.add_argument("--max-coords", type=int, default=4)
    grad.add_argument("--report", default=None)
    grad.set_defaults(func=cmd_gradcheck)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Punto de entrada; devuelve el código de salida en lugar de terminar el proceso"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except FastTabError as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(run())
