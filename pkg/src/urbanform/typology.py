"""Two-axis urban environment typology and its collapse into four classes.

The physical environment of a city is described by crossing two indicators:
the diversity of individual buildings (numbered 1-4) and the street pattern
of the surrounding network (lettered A-D).  The 16 resulting cells collapse
into four formal/informal classes, each with a canonical display color.  A
fifth index (0) is reserved for unrecognized area, drawn black and excluded
from training and evaluation everywhere else in the toolkit.
"""

import json
import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum


class BuildingDiversity(IntEnum):
    """Building axis: increasing formality from 1 (none) to 4 (with code)."""

    NONE = 1
    LIMITED = 2
    UNWRITTEN = 3
    WITH_CODE = 4


class StreetPattern(str, Enum):
    """Street-network axis: how the road layout came to be."""

    NATURAL = "A"                 # natural generation
    PLANNED_OUTLINE = "B"         # planned outline + local natural generation
    OUTER_NATURAL = "C"           # outer natural generation + planned in the district
    PLANNED = "D"


class ClassLabel(IntEnum):
    """Collapsed 4-class scheme plus the unrecognized/ignore class.

    Index 0 is unrecognized so zero-initialized label rasters mean "unknown".
    """

    UNRECOGNIZED = 0
    HIGHLY_INFORMAL = 1
    MODERATELY_INFORMAL = 2
    MODERATELY_FORMAL = 3
    HIGHLY_FORMAL = 4

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]


_DISPLAY_NAMES = {
    ClassLabel.UNRECOGNIZED: "Unrecognized",
    ClassLabel.HIGHLY_INFORMAL: "Highly Informal",
    ClassLabel.MODERATELY_INFORMAL: "Moderately Informal",
    ClassLabel.MODERATELY_FORMAL: "Moderately Formal",
    ClassLabel.HIGHLY_FORMAL: "Highly Formal",
}

REAL_CLASSES = (
    ClassLabel.HIGHLY_INFORMAL,
    ClassLabel.MODERATELY_INFORMAL,
    ClassLabel.MODERATELY_FORMAL,
    ClassLabel.HIGHLY_FORMAL,
)


@dataclass(frozen=True, order=True)
class TypologyCode:
    """One cell of the 4x4 matrix, e.g. ``2/A``."""

    diversity: BuildingDiversity
    pattern: StreetPattern

    def __str__(self) -> str:
        return f"{self.diversity.value}/{self.pattern.value}"


class CodeParseError(ValueError):
    """Raised for text that is not a ``<digit>/<letter>`` typology code."""


_CODE_RE = re.compile(r"^\s*([0-9])\s*/\s*([A-Za-z])\s*$")


def parse_code(text: str) -> TypologyCode:
    """Parse ``"2/A"`` (whitespace- and case-insensitive) into a TypologyCode."""
    m = _CODE_RE.match(text)
    if not m:
        raise CodeParseError(f"not a typology code: {text!r}")
    digit, letter = m.group(1), m.group(2).upper()
    if digit not in "1234":
        raise CodeParseError(f"building diversity out of range: {digit!r}")
    if letter not in "ABCD":
        raise CodeParseError(f"street pattern out of range: {letter!r}")
    return TypologyCode(BuildingDiversity(int(digit)), StreetPattern(letter))


def all_codes() -> list[TypologyCode]:
    """The 16 cells in (diversity, pattern) order."""
    return [TypologyCode(d, p) for d in BuildingDiversity for p in StreetPattern]


# Collapse of the 16 cells into the four classes.  The sets partition the
# matrix with sizes 3/6/6/1.
_CLASS_SETS = {
    ClassLabel.HIGHLY_INFORMAL: ("1/A", "2/A", "2/B"),
    ClassLabel.MODERATELY_INFORMAL: ("1/B", "1/C", "1/D", "2/C", "2/D", "3/A"),
    ClassLabel.MODERATELY_FORMAL: ("3/B", "3/C", "3/D", "4/A", "4/B", "4/C"),
    ClassLabel.HIGHLY_FORMAL: ("4/D",),
}

_CODE_TO_CLASS = {
    code: label for label, codes in _CLASS_SETS.items() for code in codes
}
assert len(_CODE_TO_CLASS) == 16


def classify_code(code: TypologyCode) -> ClassLabel:
    """Collapse a matrix cell to its formal/informal class."""
    return _CODE_TO_CLASS[str(code)]


def class_codes(label: ClassLabel) -> tuple[TypologyCode, ...]:
    """The matrix cells that collapse to ``label`` (empty for UNRECOGNIZED)."""
    return tuple(parse_code(c) for c in _CLASS_SETS.get(label, ()))


RGB = tuple[int, int, int]

#: Saturated defaults; hand-painted ground truth may use other shades, so the
#: palette is overridable wherever rasters are decoded.
DEFAULT_COLORS: dict[ClassLabel, RGB] = {
    ClassLabel.UNRECOGNIZED: (0, 0, 0),
    ClassLabel.HIGHLY_INFORMAL: (255, 0, 0),       # red
    ClassLabel.MODERATELY_INFORMAL: (255, 255, 0),  # yellow
    ClassLabel.MODERATELY_FORMAL: (0, 255, 255),    # cyan
    ClassLabel.HIGHLY_FORMAL: (0, 0, 255),          # blue
}


class ColorMapError(ValueError):
    """Raised for palettes that are not a bijection over the five labels."""


@dataclass(frozen=True)
class ColorMap:
    """Bijective mapping from the five class labels to RGB triples."""

    entries: dict[ClassLabel, RGB] = field(
        default_factory=lambda: dict(DEFAULT_COLORS)
    )

    def __post_init__(self):
        if set(self.entries) != set(ClassLabel):
            missing = sorted(set(ClassLabel) - set(self.entries))
            raise ColorMapError(f"palette must cover all 5 labels, missing {missing}")
        colors = list(self.entries.values())
        if len(set(colors)) != len(colors):
            raise ColorMapError("palette colors must be pairwise distinct")
        for c in colors:
            if len(c) != 3 or not all(0 <= v <= 255 for v in c):
                raise ColorMapError(f"not an RGB triple: {c!r}")

    def color(self, label: ClassLabel) -> RGB:
        return self.entries[ClassLabel(label)]

    def nearest(self, rgb) -> ClassLabel:
        """The label whose color is Chebyshev-closest to ``rgb`` (ties: lowest index)."""
        r, g, b = rgb

        def dist(item):
            cr, cg, cb = item[1]
            return max(abs(r - cr), abs(g - cg), abs(b - cb)), item[0]

        return min(self.entries.items(), key=dist)[0]

    def min_pairwise_distance(self) -> int:
        """Smallest Chebyshev distance between any two palette colors."""
        colors = list(self.entries.values())
        return min(
            max(abs(a - b) for a, b in zip(c1, c2))
            for i, c1 in enumerate(colors)
            for c2 in colors[i + 1:]
        )

    def to_json(self) -> dict:
        return {str(int(label)): list(c) for label, c in sorted(self.entries.items())}

    @classmethod
    def from_json(cls, doc: dict) -> "ColorMap":
        entries = {ClassLabel(int(k)): tuple(v) for k, v in doc.items()}
        return cls(entries)


def class_color(label: ClassLabel, colormap: ColorMap | None = None) -> RGB:
    """Canonical color for a class label under ``colormap`` (default palette)."""
    return (colormap or ColorMap()).color(label)


def typology_document(colormap: ColorMap | None = None) -> dict:
    """JSON document describing the matrix and palette.

    This is the single source of truth the annotation UI fetches; clients
    never hardcode the cell-to-class table.
    """
    cm = colormap or ColorMap()
    return {
        "codes": {str(code): int(classify_code(code)) for code in all_codes()},
        "classes": {
            str(int(label)): {
                "name": label.display_name,
                "color": list(cm.color(label)),
            }
            for label in ClassLabel
        },
        "diversity": {str(d.value): d.name.lower().replace("_", " ") for d in BuildingDiversity},
        "patterns": {p.value: p.name.lower().replace("_", " ") for p in StreetPattern},
    }


def load_colormap(path) -> ColorMap:
    """Load a palette override (JSON ``{"0": [r,g,b], ...}``) from disk."""
    with open(path) as f:
        return ColorMap.from_json(json.load(f))
