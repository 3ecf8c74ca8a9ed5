"""
Caption text format.

An augmented caption is the coarse caption, minus one trailing period,
followed by `, & key: value` for each included descriptor in presentation
order and a single terminal period:

    The deep rumble of the storm echoes through the sky, & loudness: soft, & duration: 3 seconds.

`format_caption` and `parse_caption` are inverses on records whose coarse text
has no trailing period and does not contain the separator token.
"""

import logging
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Tuple, Union

from .config import DESCRIPTOR_KEYS
from .descriptors import VOCABULARY, Category, DescriptorSet, format_duration
from .errors import AppError, ErrorContext, ErrorType, parse_error

if TYPE_CHECKING:
    from .augment import AugmentationPlan

logger = logging.getLogger(__name__)

TOKEN = ", & "
KEY_ORDER = {key: i for i, key in enumerate(DESCRIPTOR_KEYS)}

_SEGMENT = re.compile(r"([A-Za-z_]+): (.*)\Z", re.DOTALL)
_DURATION = re.compile(r"(0|[1-9][0-9]*) seconds\Z")


def _invalid(message: str, **details) -> AppError:
    return AppError(message, ErrorType.INVALID_RECORD,
                    ErrorContext(operation="caption", details=details or None))


def _bare(coarse: str) -> str:
    return coarse[:-1] if coarse.endswith(".") else coarse


def is_legal_value(key: str, value: str) -> bool:
    if key == "duration":
        return _DURATION.match(value) is not None
    return value in VOCABULARY[key].surfaces()


@dataclass(frozen=True)
class CaptionRecord:
    """Coarse caption plus its descriptor tail, kept in presentation order."""
    coarse: str
    descriptors: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if not isinstance(self.coarse, str) or not _bare(self.coarse).strip():
            raise _invalid("coarse caption is empty")
        pairs = tuple((str(k), str(v)) for k, v in self.descriptors)
        seen = set()
        for key, value in pairs:
            if key not in KEY_ORDER:
                raise AppError(f"unknown descriptor {key!r}", ErrorType.UNKNOWN_DESCRIPTOR,
                               ErrorContext(operation="caption", details={"key": key}))
            if key in seen:
                raise AppError(f"descriptor {key!r} given twice", ErrorType.DUPLICATE_DESCRIPTOR,
                               ErrorContext(operation="caption", details={"key": key}))
            seen.add(key)
            if not is_legal_value(key, value):
                raise _invalid(f"{value!r} is not a valid {key} value", key=key, value=value)
        object.__setattr__(self, "descriptors", tuple(sorted(pairs, key=lambda kv: KEY_ORDER[kv[0]])))

    def get(self, key: str) -> Optional[str]:
        return dict(self.descriptors).get(key)

    def to_dict(self) -> Dict[str, object]:
        return {"coarse": self.coarse, "descriptors": dict(self.descriptors)}


def lint_coarse(coarse: str) -> Optional[str]:
    """Warning text for coarse captions the format cannot carry, else None."""
    if not _bare(coarse).strip():
        return "coarse caption is empty"
    if TOKEN in coarse:
        return f"coarse caption contains the separator {TOKEN!r}"
    return None


def check_coarse(coarse: str) -> str:
    warning = lint_coarse(coarse)
    if warning:
        logger.warning("Rejecting caption %r: %s", coarse, warning)
        raise _invalid(warning)
    return coarse


def format_caption(rec: CaptionRecord) -> str:
    if not rec.descriptors:
        return rec.coarse
    base = _bare(rec.coarse)
    tail = "".join(f"{TOKEN}{key}: {value}" for key, value in rec.descriptors)
    return f"{base}{tail}."


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def parse_caption(text: str) -> CaptionRecord:
    """Split a caption on the separator token and validate each `key: value` segment."""
    if TOKEN not in text:
        return CaptionRecord(text)

    segments = text.split(TOKEN)
    coarse = segments[0]
    if not coarse.strip():
        raise _invalid("coarse caption is empty")

    pairs: List[Tuple[str, str]] = []
    seen: Dict[str, int] = {}
    index = len(coarse) + len(TOKEN)
    for i, segment in enumerate(segments[1:]):
        start = index
        index += len(segment) + len(TOKEN)
        if i == len(segments) - 2 and segment.endswith("."):
            segment = segment[:-1]

        match = _SEGMENT.match(segment)
        if match is None:
            raise parse_error(f"expected 'key: value', got {segment!r}", _byte_offset(text, start))
        key, value = match.group(1), match.group(2)
        if key not in KEY_ORDER:
            raise AppError(f"unknown descriptor {key!r}", ErrorType.UNKNOWN_DESCRIPTOR,
                           ErrorContext(operation="parse_caption",
                                        details={"key": key, "offset": _byte_offset(text, start)}))
        if key in seen:
            raise AppError(f"descriptor {key!r} given twice", ErrorType.DUPLICATE_DESCRIPTOR,
                           ErrorContext(operation="parse_caption",
                                        details={"key": key, "offset": _byte_offset(text, start)}))
        if not is_legal_value(key, value):
            raise parse_error(f"{value!r} is not a valid {key} value",
                              _byte_offset(text, start + len(key) + 2))
        seen[key] = start
        pairs.append((key, value))

    return CaptionRecord(coarse, tuple(pairs))


def record_for(coarse: str, ds: DescriptorSet, plan: Optional["AugmentationPlan"] = None) -> CaptionRecord:
    """Descriptors present in `ds`, filtered by the plan's inclusion flags when given."""
    pairs = [(key, value) for key, value in ds.categories() if plan is None or plan.includes(key)]
    return CaptionRecord(coarse, tuple(pairs))


def _surface(key: str, value: Union[str, Category, float, int]) -> str:
    if key == "duration":
        if isinstance(value, str):
            if not is_legal_value(key, value):
                raise _invalid(f"{value!r} is not a valid duration", key=key)
            return value
        if value < 0:
            raise _invalid(f"duration must be non-negative, got {value}", key=key)
        return format_duration(float(value))
    if isinstance(value, Category):
        return value.surface
    try:
        return VOCABULARY[key].from_surface(str(value)).surface
    except ValueError:
        allowed = ", ".join(VOCABULARY[key].surfaces())
        raise _invalid(f"{value!r} is not a valid {key} value (expected one of: {allowed})", key=key)


def compose_prompt(coarse: str, **descriptors: Union[str, Category, float, int, None]) -> str:
    """Inference prompt from a coarse caption plus requested categories.

    Categories may be given in caption form ("very wet") or as enum names
    ("very_wet"); duration is a number of seconds. None values are skipped.
    """
    check_coarse(coarse)
    pairs = []
    for key, value in descriptors.items():
        if value is None:
            continue
        if key not in KEY_ORDER:
            raise AppError(f"unknown descriptor {key!r}", ErrorType.UNKNOWN_DESCRIPTOR,
                           ErrorContext(operation="compose_prompt", details={"key": key}))
        pairs.append((key, _surface(key, value)))
    return format_caption(CaptionRecord(coarse, tuple(pairs)))


def format_all(coarse_variants: Iterable[str], ds: DescriptorSet,
               plan: Optional["AugmentationPlan"] = None) -> List[str]:
    """One caption per coarse variant, all sharing the same descriptor tail."""
    return [format_caption(record_for(check_coarse(c), ds, plan)) for c in coarse_variants]
