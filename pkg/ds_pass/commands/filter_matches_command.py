import argparse
from typing import Dict, Optional

import yaml

from ..errors import ConfigError
from ..imageio import load_labels
from ..labels import IGNORE_ID, SegmentationMap
from ..semantic_vo import DEFAULT_MIN_INLIERS, dump_filter_result, filter_matches, load_matches
from .base import BaseCommand, CommandResult


def _load_groups(path: Optional[str]) -> Optional[Dict[int, int]]:
    if path is None:
        return None
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
        return {int(k): int(v) for k, v in data.items()}
    except (OSError, yaml.YAMLError, AttributeError, ValueError) as e:
        raise ConfigError(f"Cannot read label groups {path}: {e}") from e


class FilterMatchesCommand(BaseCommand):
    """
    Keep only keypoint matches whose semantic labels agree across two frames.

    Args:
        matches: matches JSON (array of {xa, ya, xb, yb, score})
        seg_a: class-id map of frame A in annular coordinates (PNG)
        seg_b: class-id map of frame B in annular coordinates (PNG)
        out: kept matches and filter report (JSON)
        ignore_id: label that never matches
        min_inliers: warn when fewer matches survive
        groups: optional JSON object mapping class id to group id
    """

    @property
    def command_name(self) -> str:
        return "filter-matches"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--matches", required=True, help=self.option_help("matches"))
        parser.add_argument("--seg-a", required=True, help=self.option_help("seg_a"))
        parser.add_argument("--seg-b", required=True, help=self.option_help("seg_b"))
        parser.add_argument("--out", required=True, help=self.option_help("out"))
        parser.add_argument("--ignore-id", type=int, default=IGNORE_ID, help=self.option_help("ignore_id"))
        parser.add_argument("--min-inliers", type=int, default=DEFAULT_MIN_INLIERS, help=self.option_help("min_inliers"))
        parser.add_argument("--groups", help=self.option_help("groups"))

    def run(self, args: argparse.Namespace) -> CommandResult:
        matches = load_matches(args.matches)
        seg_a = SegmentationMap(load_labels(args.seg_a), ignore_id=args.ignore_id)
        seg_b = SegmentationMap(load_labels(args.seg_b), ignore_id=args.ignore_id)
        kept, report = filter_matches(
            matches,
            seg_a,
            seg_b,
            ignore_id=args.ignore_id,
            label_groups=_load_groups(args.groups),
            min_inliers=args.min_inliers,
        )
        dump_filter_result(args.out, kept, report)
        return CommandResult(message=f"Kept {report.kept} of {report.total} matches -> {args.out}")
