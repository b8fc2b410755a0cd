import argparse
import json
from pathlib import Path

from pydantic import ValidationError

from ..errors import DataError
from ..evaluation import (
    PASS_REFERENCE_IOU,
    EvaluationReport,
    compare_reports,
    evaluate_directories,
    format_report_table,
)
from ..labels import load_class_map
from .base import BaseCommand, CommandResult

REFERENCES = {"pass": PASS_REFERENCE_IOU}


class EvalCommand(BaseCommand):
    """
    Per-class IoU and mIoU of predicted class-id maps against ground truth.

    Files are paired by basename. Predictions hold training ids; they are
    remapped to evaluation ids when the class map defines a remap.

    Args:
        pred_dir: directory of predicted class-id PNGs
        gt_dir: directory of ground-truth class-id PNGs
        classes: class map JSON
        out: report to write (JSON)
        csv: optional per-class table (CSV)
        compare: baseline report JSON; the IoU boost over it is added to the report
        reference: print the table next to published reference values
        gt_eval_ids: ground truth already holds evaluation ids
    """

    @property
    def command_name(self) -> str:
        return "eval"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--pred-dir", required=True, help=self.option_help("pred_dir"))
        parser.add_argument("--gt-dir", required=True, help=self.option_help("gt_dir"))
        parser.add_argument("--classes", required=True, help=self.option_help("classes"))
        parser.add_argument("--out", required=True, help=self.option_help("out"))
        parser.add_argument("--csv", help=self.option_help("csv"))
        parser.add_argument("--compare", help=self.option_help("compare"))
        parser.add_argument("--reference", choices=sorted(REFERENCES), help=self.option_help("reference"))
        parser.add_argument("--gt-eval-ids", action="store_true", help=self.option_help("gt_eval_ids"))

    def run(self, args: argparse.Namespace) -> CommandResult:
        class_map = load_class_map(args.classes)
        _, report = evaluate_directories(args.pred_dir, args.gt_dir, class_map, gt_eval_ids=args.gt_eval_ids)
        document = report.model_dump()
        if args.compare:
            baseline = _load_report(args.compare)
            document["comparison"] = compare_reports(report, baseline).model_dump()
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2)
        if args.csv:
            report.to_csv(args.csv)
        table = format_report_table(report, REFERENCES.get(args.reference) if args.reference else None)
        return CommandResult(message=f"{table}\nReport written to {out}")


def _load_report(path: str) -> EvaluationReport:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return EvaluationReport.model_validate(json.load(f))
    except FileNotFoundError as e:
        raise DataError(f"Baseline report not found: {path}") from e
    except (json.JSONDecodeError, ValidationError) as e:
        raise DataError(f"Baseline report {path} is invalid: {e}") from e
