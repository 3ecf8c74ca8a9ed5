"""
Batch orchestration.

`run_pipeline` takes a JSONL manifest through plan -> augment -> analyze ->
caption for every entry and writes an output manifest plus a run report.
Entries are processed in parallel but collected and written in input order by
a single collector, so the output bytes depend only on (manifest, config).

`evaluate_generated` measures generated audio against the descriptors its
prompt asked for; `dataset_stats` summarizes an output manifest.
"""

import hashlib
import json
import logging
import os
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .audio_io import AudioBuffer, canonicalize, load_audio, save_audio
from .augment import AugmentationPlan, apply_plan, plan_augmentation
from .captions import format_all, parse_caption
from .config import DESCRIPTOR_KEYS, PipelineConfig, ThresholdConfig, config_hash
from .descriptors import VOCABULARY, DescriptorSet, analyze, with_plan_labels
from .errors import AppError, AppResult, ErrorContext, ErrorType, io_error, manifest_error, wrap_result
from .progress import RunProgress

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
REPORT_NAME = "report.json"
AUDIO_DIR = "audio"

# Descriptors left out of alignment means: generated audio is loudness
# normalized, and fades have no measurement.
EVAL_EXCLUDED = ("loudness", "fade")

EVAL_VALUE_FIELDS = {
    "pitch": "pitch_octave",
    "reverb": "rt60_s",
    "noise": "snr_db",
    "brightness": "brightness_centroid",
    "duration": "duration_s",
}

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


class ManifestEntry(BaseModel):
    """One input line: a clip, its coarse caption(s) and free-form metadata."""
    model_config = ConfigDict(frozen=True, extra="ignore")

    id: str = Field(min_length=1)
    audio_path: str = Field(min_length=1)
    coarse_caption: Union[str, List[str]]
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("coarse_caption")
    @classmethod
    def _check_caption(cls, value):
        if isinstance(value, list) and not value:
            raise ValueError("coarse_caption list must not be empty")
        return value

    @property
    def coarse_variants(self) -> List[str]:
        return [self.coarse_caption] if isinstance(self.coarse_caption, str) else list(self.coarse_caption)


@dataclass
class AugmentedEntry:
    """One output line, plus the augmented audio until the collector writes it."""
    id: str
    audio_path: str
    captions: List[str]
    descriptors: DescriptorSet
    plan: AugmentationPlan
    config_hash: str
    tool_version: str = __version__
    metadata: Dict[str, Any] = field(default_factory=dict)
    audio: Optional[AudioBuffer] = field(default=None, repr=False, compare=False)

    @property
    def caption(self) -> str:
        return self.captions[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "audio_path": self.audio_path,
            "caption": self.caption,
            "captions": list(self.captions),
            "descriptors": self.descriptors.to_dict(),
            "plan": self.plan.to_dict(),
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "metadata": self.metadata,
        }


@dataclass
class RunReport:
    total: int = 0
    succeeded: int = 0
    failures: List[Dict[str, str]] = field(default_factory=list)
    category_counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    config_hash: str = ""
    tool_version: str = __version__

    @property
    def failed(self) -> int:
        return len(self.failures)

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0

    def count_caption(self, caption: str) -> None:
        for key, value in parse_caption(caption).descriptors:
            bucket = self.category_counts.setdefault(key, {})
            bucket[value] = bucket.get(value, 0) + 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total": self.total,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "failures": self.failures,
            "category_counts": {key: dict(sorted(self.category_counts[key].items()))
                                for key in DESCRIPTOR_KEYS if key in self.category_counts},
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
        }


# === MANIFEST IO ===

def _read_jsonl(path: Path) -> Iterator[Tuple[int, Any]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise io_error(str(path), "read_manifest", e)
    for number, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            yield number, json.loads(line)
        except json.JSONDecodeError as e:
            raise manifest_error(str(path), number, f"invalid JSON: {e.msg}", e)


def _resolve(base: Path, audio_path: str) -> str:
    p = Path(audio_path)
    return str(p if p.is_absolute() else (base / p))


def load_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    """Validated entries in file order; relative audio paths resolve against the manifest's directory."""
    path = Path(path)
    base = path.resolve().parent
    entries: List[ManifestEntry] = []
    first_line: Dict[str, int] = {}
    for number, data in _read_jsonl(path):
        if not isinstance(data, dict):
            raise manifest_error(str(path), number, "entry must be a JSON object")
        try:
            entry = ManifestEntry.model_validate(data)
        except ValidationError as e:
            problems = "; ".join(f"{'.'.join(map(str, err['loc'])) or 'entry'}: {err['msg']}"
                                 for err in e.errors())
            raise manifest_error(str(path), number, problems, e)
        if entry.id in first_line:
            raise manifest_error(str(path), number,
                                 f"duplicate id {entry.id!r} (first seen on line {first_line[entry.id]})")
        first_line[entry.id] = number
        entries.append(entry.model_copy(update={"audio_path": _resolve(base, entry.audio_path)}))
    logger.info("Loaded %d entries from %s", len(entries), path)
    return entries


def load_output_manifest(path: Union[str, Path]) -> List[Dict[str, Any]]:
    path = Path(path)
    rows = []
    for number, data in _read_jsonl(path):
        if not isinstance(data, dict) or "descriptors" not in data or "caption" not in data:
            raise manifest_error(str(path), number, "not an augmented entry (needs caption and descriptors)")
        rows.append(data)
    return rows


def output_audio_name(entry_id: str) -> str:
    """Filesystem-safe, collision-free file name for an entry's augmented audio."""
    safe = _UNSAFE.sub("_", entry_id)
    if safe != entry_id or safe.startswith("."):
        suffix = hashlib.blake2b(entry_id.encode("utf-8"), digest_size=4).hexdigest()
        safe = f"{safe}-{suffix}"
    return f"{safe}.wav"


# === PER-ENTRY PROCESSING ===

def process_entry(entry: ManifestEntry, cfg: PipelineConfig) -> AugmentedEntry:
    """Decode, canonicalize, plan, augment, analyze and caption one entry.

    The augmented audio rides along on the result when an effect changed
    samples; otherwise the entry references its source file.
    """
    variants = entry.coarse_variants
    thresholds = cfg.thresholds

    try:
        buf = canonicalize(load_audio(entry.audio_path), thresholds.canonical_rate)
    except AppError as e:
        raise e.with_context(entry_id=entry.id)

    plan = plan_augmentation(entry.id, cfg.global_seed, cfg.augment)
    augmented, modified = apply_plan(buf, plan, cfg.augment)

    if thresholds.measure_after_augmentation:
        ds = analyze(augmented, thresholds, plan)
    else:
        ds = with_plan_labels(analyze(buf, thresholds), plan, augmented.duration)

    captions = format_all(variants, ds, plan)
    audio_path = f"{AUDIO_DIR}/{output_audio_name(entry.id)}" if modified else entry.audio_path
    return AugmentedEntry(
        id=entry.id,
        audio_path=audio_path,
        captions=captions,
        descriptors=ds,
        plan=plan,
        config_hash=config_hash(cfg),
        metadata=dict(entry.metadata),
        audio=augmented if modified else None,
    )


def _process_safely(entry: ManifestEntry, cfg: PipelineConfig) -> AppResult[AugmentedEntry]:
    # module level so worker processes can unpickle it
    return wrap_result(process_entry)(entry, cfg)


def _results(entries: Sequence[ManifestEntry], cfg: PipelineConfig) -> Iterator[AppResult[AugmentedEntry]]:
    if cfg.workers <= 1 or len(entries) <= 1:
        for entry in entries:
            yield _process_safely(entry, cfg)
        return
    with ProcessPoolExecutor(max_workers=min(cfg.workers, len(entries))) as pool:
        # map yields in submission order whatever the completion order
        yield from pool.map(_process_safely, entries, repeat(cfg))


def _prepare_output(output_dir: Path) -> None:
    try:
        (output_dir / AUDIO_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise io_error(str(output_dir), "prepare_output", e)
    if not os.access(output_dir, os.W_OK) or not os.access(output_dir / AUDIO_DIR, os.W_OK):
        raise AppError("Output directory is not writable", ErrorType.IO_ERROR,
                       ErrorContext(file_path=str(output_dir), operation="prepare_output"))


def run_pipeline(manifest: Sequence[ManifestEntry], cfg: PipelineConfig,
                 output_dir: Optional[Union[str, Path]] = None, show_progress: bool = False) -> RunReport:
    """Process every entry and write manifest.jsonl, report.json and augmented audio.

    Raises before any processing when the output directory cannot be written.
    """
    target = output_dir if output_dir is not None else cfg.output_dir
    if target is None:
        raise AppError("No output directory given", ErrorType.CONFIG_ERROR, ErrorContext(operation="run_pipeline"))
    out_dir = Path(target)
    _prepare_output(out_dir)

    digest = config_hash(cfg)
    report = RunReport(total=len(manifest), config_hash=digest)
    manifest_path = out_dir / MANIFEST_NAME
    logger.info("Running %d entries with %d worker(s), config %s", len(manifest), cfg.workers, digest)

    try:
        with manifest_path.open("w", encoding="utf-8", newline="\n") as sink, \
                RunProgress(len(manifest), show_details=show_progress) as progress:
            for entry, result in zip(manifest, _results(manifest, cfg)):
                if result.is_ok():
                    result = result.and_then(lambda done: _collect(done, out_dir, sink, report))
                if result.is_err():
                    error = result.error
                    report.failures.append({"id": entry.id, "error_type": error.error_type.value,
                                            "message": error.message})
                    logger.debug("Entry %s failed: %s", entry.id, error)
                progress.finish_entry(entry.id, result.is_ok(), "" if result.is_ok() else result.error.message)
    except OSError as e:
        raise io_error(str(manifest_path), "write_manifest", e)

    report.succeeded = report.total - report.failed
    _write_json(out_dir / REPORT_NAME, report.to_dict())
    return report


def _collect(done: AugmentedEntry, out_dir: Path, sink, report: RunReport) -> AppResult[AugmentedEntry]:
    @wrap_result
    def collect() -> AugmentedEntry:
        if done.audio is not None:
            clipped = save_audio(out_dir / done.audio_path, done.audio, "float32")
            if clipped:
                logger.warning("Entry %s: clipped %d samples", done.id, clipped)
        sink.write(json.dumps(done.to_dict(), ensure_ascii=False) + "\n")
        report.count_caption(done.caption)
        return done
    return collect()


def _write_json(path: Path, data: Any) -> None:
    try:
        path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    except OSError as e:
        raise io_error(str(path), "write_report", e)


# === EVALUATION ===

class PromptPair(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    prompt: str
    audio_path: str = Field(min_length=1)


def load_pairs(path: Union[str, Path]) -> List[PromptPair]:
    path = Path(path)
    base = path.resolve().parent
    pairs = []
    for number, data in _read_jsonl(path):
        if not isinstance(data, dict):
            raise manifest_error(str(path), number, "pair must be a JSON object")
        if "prompt" not in data and "caption" in data:
            # an output manifest line can serve as its own prompt
            data = {"prompt": data["caption"], "audio_path": data.get("audio_path")}
        try:
            pair = PromptPair.model_validate(data)
        except ValidationError as e:
            raise manifest_error(str(path), number, str(e.errors()[0]["msg"]), e)
        pairs.append(pair.model_copy(update={"audio_path": _resolve(base, pair.audio_path)}))
    return pairs


@dataclass(frozen=True)
class AlignmentRow:
    descriptor: str
    subcategory: str
    count: int
    mean: Optional[float]
    stddev: Optional[float]
    undefined: int = 0

    def stats(self) -> Dict[str, float]:
        if not self.count:
            return {}
        return {"count": self.count, "mean": self.mean, "stddev": self.stddev}


@dataclass
class AlignmentReport:
    rows: List[AlignmentRow] = field(default_factory=list)
    evaluated: int = 0
    skipped: int = 0
    duration_abs_error_mean: Optional[float] = None

    def row(self, descriptor: str, subcategory: str) -> Optional[AlignmentRow]:
        for r in self.rows:
            if r.descriptor == descriptor and r.subcategory == subcategory:
                return r
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [vars(r).copy() for r in self.rows],
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "duration_abs_error_mean": self.duration_abs_error_mean,
            "excluded": list(EVAL_EXCLUDED),
        }


def _subcategory_order(descriptor: str, subcategory: str) -> Tuple[int, float, str]:
    if descriptor == "duration":
        return 0, float(subcategory.split()[0]), subcategory
    surfaces = VOCABULARY[descriptor].surfaces()
    return 0, float(surfaces.index(subcategory)), subcategory


def evaluate_generated(pairs: Iterable[PromptPair],
                       thresholds: ThresholdConfig = ThresholdConfig()) -> AlignmentReport:
    """Group measured values by the subcategory each prompt asked for."""
    values: Dict[Tuple[str, str], List[float]] = {}
    undefined: Dict[Tuple[str, str], int] = {}
    duration_errors: List[float] = []
    report = AlignmentReport()

    for pair in pairs:
        record = parse_caption(pair.prompt)
        wanted = [(k, v) for k, v in record.descriptors if k not in EVAL_EXCLUDED]
        if not record.descriptors:
            report.skipped += 1
            continue
        report.evaluated += 1
        if not wanted:
            continue

        try:
            buf = canonicalize(load_audio(Path(pair.audio_path)), thresholds.canonical_rate)
        except AppError as e:
            raise e.with_context(operation="evaluate_generated")
        measured = analyze(buf, thresholds)

        for key, sub in wanted:
            value = getattr(measured, EVAL_VALUE_FIELDS[key])
            if value is None:
                undefined[(key, sub)] = undefined.get((key, sub), 0) + 1
                values.setdefault((key, sub), [])
                continue
            values.setdefault((key, sub), []).append(float(value))
            if key == "duration":
                duration_errors.append(abs(float(sub.split()[0]) - float(value)))

    key_rank = {k: i for i, k in enumerate(DESCRIPTOR_KEYS)}
    for key, sub in sorted(values, key=lambda ks: (key_rank[ks[0]], _subcategory_order(*ks))):
        vals = np.asarray(values[(key, sub)])
        report.rows.append(AlignmentRow(
            descriptor=key,
            subcategory=sub,
            count=int(vals.size),
            mean=float(vals.mean()) if vals.size else None,
            stddev=float(vals.std()) if vals.size else None,
            undefined=undefined.get((key, sub), 0),
        ))
    if duration_errors:
        report.duration_abs_error_mean = float(np.mean(duration_errors))
    return report


def compare_reports(reports: Mapping[str, AlignmentReport]) -> List[Dict[str, Any]]:
    """Merge named reports into rows keyed (descriptor, subcategory) with one stats column per name."""
    merged: Dict[Tuple[str, str], Dict[str, Any]] = {}
    order: List[Tuple[str, str]] = []
    for name, report in reports.items():
        for r in report.rows:
            key = (r.descriptor, r.subcategory)
            if key not in merged:
                merged[key] = {"descriptor": r.descriptor, "subcategory": r.subcategory}
                order.append(key)
            merged[key][name] = r.stats()
    key_rank = {k: i for i, k in enumerate(DESCRIPTOR_KEYS)}
    order.sort(key=lambda ks: (key_rank[ks[0]], _subcategory_order(*ks)))
    return [merged[k] for k in order]


# === DATASET STATISTICS ===

def _summary(values: List[float]) -> Dict[str, float]:
    return {"count": len(values), "min": min(values), "median": statistics.median(values), "max": max(values)}


def dataset_stats(entries: Iterable[Union[AugmentedEntry, Mapping[str, Any]]]) -> Dict[str, Any]:
    """Category histograms, value ranges and caption lengths over an output manifest."""
    histograms: Dict[str, Dict[str, int]] = {}
    values: Dict[str, List[float]] = {}
    lengths: List[int] = []
    count = 0

    for entry in entries:
        data = entry.to_dict() if isinstance(entry, AugmentedEntry) else entry
        count += 1
        lengths.append(len(data["caption"]))
        ds = DescriptorSet.from_dict(data["descriptors"])
        for key, label in ds.categories():
            bucket = histograms.setdefault(key, {})
            bucket[label] = bucket.get(label, 0) + 1
        for key, value in data["descriptors"].items():
            if key.endswith("_value") and value is not None:
                values.setdefault(key[:-len("_value")], []).append(float(value))

    return {
        "entries": count,
        "histograms": {key: dict(sorted(histograms[key].items(), key=lambda kv: _subcategory_order(key, kv[0])))
                       for key in DESCRIPTOR_KEYS if key in histograms},
        "values": {key: _summary(values[key]) for key in DESCRIPTOR_KEYS if key in values},
        "caption_length": _summary([float(n) for n in lengths]) if lengths else None,
    }
